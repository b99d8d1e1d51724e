import sys

from lqmfg.main import main

sys.exit(main())
