import sys

from ransomflow.cli import main

sys.exit(main())
