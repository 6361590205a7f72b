import sys

from cinf_lab.cli import main

sys.exit(main())
