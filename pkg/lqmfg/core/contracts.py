from __future__ import annotations

from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field

Matrix = List[List[float]]
Vector = List[float]
Coefficient = Literal["Q", "B", "C", "D"]


# ──────────────────────────────────────────────────────────────
# Game spec files (discriminated on "kind")
# ──────────────────────────────────────────────────────────────

class NPersonPlayerSpec(BaseModel):
    A: Matrix
    sigma: Matrix
    R: Matrix
    Q_blocks: List[List[Matrix]]   # N x N grid of d x d blocks Q^i_jk
    Xbar: List[Vector]             # N reference positions Xbar_i^j


class NPersonSpec(BaseModel):
    kind: Literal["n_person"]
    N: int = Field(ge=2)
    d: int = Field(ge=1)
    players: List[NPersonPlayerSpec]
    relaxed: bool = False


class NearlyIdenticalSpec(BaseModel):
    kind: Literal["nearly_identical"]
    N: int = Field(ge=2)
    d: int = Field(ge=1)
    A: Matrix
    sigma: Matrix
    R: Matrix
    Q: Matrix
    B: Matrix
    H: Vector
    Delta: Vector
    C: Union[Matrix, List[Matrix]]   # shared, or one per player
    D: Union[Matrix, List[Matrix]]
    relaxed: bool = False


class ScalingRuleSpec(BaseModel):
    perturb: List[Coefficient] = Field(default_factory=list)
    frozen: List[Coefficient] = Field(default_factory=list)
    heterogeneity: float = 0.0


class MeanFieldSpec(BaseModel):
    kind: Literal["mean_field"]
    d: int = Field(ge=1)
    A: Matrix
    sigma: Matrix
    R: Matrix
    Qhat: Matrix
    Bhat: Matrix
    Chat: Matrix
    Dhat: Matrix
    H: Vector
    Delta: Vector
    scaling: ScalingRuleSpec = Field(default_factory=ScalingRuleSpec)
    N_list: Optional[List[int]] = None
    relaxed: bool = False


class ConsensusSpec(BaseModel):
    kind: Literal["consensus"]
    N: int = Field(default=2, ge=2)
    d: int = Field(ge=1)
    P_N: Matrix
    A: Matrix
    sigma: Matrix
    R: Matrix
    mean_field: bool = False                              # read P_N as P_hat and solve the limit game
    schedule: Literal["constant", "harmonic"] = "harmonic"  # P^N for limit studies
    N_list: Optional[List[int]] = None


GameSpecFile = Annotated[
    Union[NPersonSpec, NearlyIdenticalSpec, MeanFieldSpec, ConsensusSpec],
    Field(discriminator="kind"),
]


# ──────────────────────────────────────────────────────────────
# Conditions
# ──────────────────────────────────────────────────────────────

ConditionFamily = Literal["E/U", "E'/U'", "Einf/Uinf"]


class ConditionReport(BaseModel):
    which: ConditionFamily
    are_solved: bool
    sylvester_residual: List[float]
    sylvester_tol: List[float]
    rank_B: int
    rank_BP: int
    size: int
    B_invertible: bool
    verdict_exists: bool
    verdict_unique: bool
    null_dim: int = 0
    failing_clause: Optional[str] = None
    reading: str = "existence checked on the unique SPD solution of each Riccati equation"


class CheckDoc(BaseModel):
    spec_key: str
    algo_version: str
    kind: str
    hypotheses: List[str] = Field(default_factory=list)
    conditions: Optional[ConditionReport] = None
    exit_code: int


# ──────────────────────────────────────────────────────────────
# Solutions
# ──────────────────────────────────────────────────────────────

class PlayerDoc(BaseModel):
    Lambda: Matrix
    rho: Vector
    mu: Vector
    Sigma: Matrix
    lam: float
    K: Matrix
    c: Vector


class FamilyDoc(BaseModel):
    dim: int
    particular: Vector
    basis: List[Vector]               # null-space basis vectors (columns)
    selected_member: Optional[int] = None
    coefficients: Optional[Vector] = None


class ResidualDoc(BaseModel):
    hjb_max: float
    kfp_max: float
    mass_error: float
    points: int


class SolutionDoc(BaseModel):
    spec_key: str
    algo_version: str
    kind: Literal["n_person", "nearly_identical", "mean_field"]
    players: List[PlayerDoc]
    family: Optional[FamilyDoc] = None
    residuals: Optional[ResidualDoc] = None
    conditions: ConditionReport


# ──────────────────────────────────────────────────────────────
# Simulation
# ──────────────────────────────────────────────────────────────

class SimConfigDoc(BaseModel):
    dt: float
    T: float
    burn_in: float
    replicas: int
    seed: int
    batches: int


class PlayerEstimateDoc(BaseModel):
    player: int
    mean_hat: Vector
    mean_se: Vector
    cov_hat: Matrix
    cov_se: Matrix
    cost_hat: float
    cost_se: float
    target_mean: Vector
    target_cov: Matrix
    target_cost: float
    mean_ok: bool
    cov_ok: bool
    cost_ok: bool


class DeviationDoc(BaseModel):
    player: int
    entry: int
    delta: float
    skipped: bool = False
    reason: Optional[str] = None
    cost_hat: Optional[float] = None
    cost_se: Optional[float] = None
    exact_cost: Optional[float] = None
    lam: float
    passes: bool = True
    strictly_above: Optional[bool] = None


class EstimateDoc(BaseModel):
    spec_key: str
    algo_version: str
    config: SimConfigDoc
    ergodic: bool
    trend_ratio: float
    players: List[PlayerEstimateDoc]
    deviations: List[DeviationDoc] = Field(default_factory=list)
    passed: bool


# ──────────────────────────────────────────────────────────────
# Limit studies
# ──────────────────────────────────────────────────────────────

class LimitRowDoc(BaseModel):
    N: int
    ok: bool
    failure: Optional[str] = None
    exists: Optional[bool] = None
    unique: Optional[bool] = None
    dist_Sigma: Optional[float] = None
    dist_mu: Optional[float] = None
    dist_lambda: Optional[float] = None
    dist_Lambda: Optional[float] = None
    dist_density: Optional[float] = None


class LimitDoc(BaseModel):
    spec_key: str
    algo_version: str
    N_list: List[int]
    limit: PlayerDoc
    rows: List[LimitRowDoc]
    slopes: Dict[str, Optional[float]]
    converged: Dict[str, bool]
    all_converged: bool


# ──────────────────────────────────────────────────────────────
# Consensus demo
# ──────────────────────────────────────────────────────────────

class ConsensusMemberDoc(BaseModel):
    member: int
    coefficients: Vector
    mu: List[Vector]
    lam: List[float]
    hjb_max: float
    kfp_max: float
    sim_mean: Optional[List[Vector]] = None
    sim_mean_se: Optional[List[Vector]] = None
    sim_mean_ok: Optional[bool] = None


class ConsensusDemoDoc(BaseModel):
    spec_key: str
    algo_version: str
    N: int
    d: int
    kernel_dim: int
    family_dim: int
    conditions: ConditionReport
    members: List[ConsensusMemberDoc]
