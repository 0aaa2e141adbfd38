import sys

from hzplan.cli import main

sys.exit(main())
