import sys

from basisforge.cli import main

sys.exit(main())
