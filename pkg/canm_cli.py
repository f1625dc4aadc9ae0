"""
Entry script for the canm command line.
"""

import logging
import signal
import sys

# importing canm.cli loads .env and applies CANM_THREADS before numpy
from canm.cli.app import main

logger = logging.getLogger(__name__)


def handle_shutdown(signum, frame):
    """Handle SIGTERM/SIGINT without a traceback"""
    logger.info("Received shutdown signal, stopping")
    sys.exit(130 if signum == signal.SIGINT else 143)


signal.signal(signal.SIGTERM, handle_shutdown)
signal.signal(signal.SIGINT, handle_shutdown)

if __name__ == "__main__":
    sys.exit(main())
