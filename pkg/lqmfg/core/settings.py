from __future__ import annotations

import os

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=None, extra="ignore")

    # Versioning
    algo_version: str = Field(default="lqmfg.v1.hamiltonian", alias="LQMFG_ALGO_VERSION")

    # Logging
    log_level: str = Field(default="INFO", alias="LQMFG_LOG_LEVEL")

    # Parallelism (0 = one thread per CPU)
    threads: int = Field(default=0, alias="LQMFG_THREADS")

    # ──────────────────────────────────────────────────────────────
    # Linear algebra tolerances
    # ──────────────────────────────────────────────────────────────

    sym_rtol: float = Field(default=1e-9, alias="LQMFG_SYM_RTOL")
    spd_rtol: float = Field(default=1e-9, alias="LQMFG_SPD_RTOL")
    rank_rtol: float = Field(default=1e-8, alias="LQMFG_RANK_RTOL")
    stability_tol: float = Field(default=1e-12, alias="LQMFG_STABILITY_TOL")
    lyapunov_kron_max_d: int = Field(default=32, alias="LQMFG_LYAPUNOV_KRON_MAX_D")

    # Riccati
    are_cond_max: float = Field(default=1e12, alias="LQMFG_ARE_COND_MAX")
    imag_tol: float = Field(default=1e-9, alias="LQMFG_IMAG_TOL")
    are_residual_rtol: float = Field(default=1e-9, alias="LQMFG_ARE_RESIDUAL_RTOL")

    # Existence / structure checks
    sylvester_rtol: float = Field(default=1e-8, alias="LQMFG_SYLVESTER_RTOL")
    block_rtol: float = Field(default=1e-9, alias="LQMFG_BLOCK_RTOL")
    symmetrizer_cond_max: float = Field(default=1e10, alias="LQMFG_SYMMETRIZER_COND_MAX")
    structure_rtol: float = Field(default=1e-8, alias="LQMFG_STRUCTURE_RTOL")

    # HJB/KFP residual surface
    residual_points: int = Field(default=1000, alias="LQMFG_RESIDUAL_POINTS")
    residual_box_sd: float = Field(default=5.0, alias="LQMFG_RESIDUAL_BOX_SD")

    # ──────────────────────────────────────────────────────────────
    # Simulation defaults
    # ──────────────────────────────────────────────────────────────

    sim_dt: float = Field(default=1e-3, alias="LQMFG_SIM_DT")
    sim_T: float = Field(default=200.0, alias="LQMFG_SIM_T")
    sim_burn_in: float = Field(default=0.2, alias="LQMFG_SIM_BURN_IN")
    sim_replicas: int = Field(default=32, alias="LQMFG_SIM_REPLICAS")
    sim_seed: int = Field(default=20240601, alias="LQMFG_SIM_SEED")
    sim_batches: int = Field(default=16, alias="LQMFG_SIM_BATCHES")
    sim_blowup_bound: float = Field(default=1e8, alias="LQMFG_SIM_BLOWUP_BOUND")
    sim_chunk_steps: int = Field(default=4096, alias="LQMFG_SIM_CHUNK_STEPS")
    sim_trace_every: int = Field(default=100, alias="LQMFG_SIM_TRACE_EVERY")
    sim_se_factor: float = Field(default=3.0, alias="LQMFG_SIM_SE_FACTOR")
    ergodic_trend_ratio: float = Field(default=1.75, alias="LQMFG_ERGODIC_TREND_RATIO")

    # ──────────────────────────────────────────────────────────────
    # Limit studies
    # ──────────────────────────────────────────────────────────────

    limit_abs_tol: float = Field(default=1e-6, alias="LQMFG_LIMIT_ABS_TOL")
    limit_tail_contraction: float = Field(default=0.75, alias="LQMFG_LIMIT_TAIL_CONTRACTION")

    def worker_count(self) -> int:
        if self.threads and self.threads > 0:
            return int(self.threads)
        return max(1, os.cpu_count() or 1)


settings = Settings()
