"""Command-line interface. Importing this package applies CANM_THREADS before
numpy is loaded by ``canm.cli.app``."""

from dotenv import load_dotenv

from canm.cli.config import apply_thread_cap

load_dotenv()
apply_thread_cap()
