import sys

from rclstm.cli import main

sys.exit(main())
