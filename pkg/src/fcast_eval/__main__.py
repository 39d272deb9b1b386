import sys

from fcast_eval.cli import main

sys.exit(main())
