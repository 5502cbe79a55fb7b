import sys

from ringivm.harness.cli import main

sys.exit(main())
