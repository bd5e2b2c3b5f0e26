import sys

from buildmon.cli import main

sys.exit(main())
