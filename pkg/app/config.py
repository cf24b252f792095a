import logging
import os
from dotenv import load_dotenv

load_dotenv()
SVI_LAB_THREADS = int(os.getenv("SVI_LAB_THREADS", "1"))       # default for --threads
SVI_LAB_LOG_LEVEL = os.getenv("SVI_LAB_LOG_LEVEL", "INFO")
SVI_LAB_OUT = os.getenv("SVI_LAB_OUT", "results")              # default output directory
SVI_LAB_SLOW = os.getenv("SVI_LAB_SLOW", "0") == "1"           # enables long acceptance runs in tests

# CSV schema version written as the first line of every emitted file
CSV_SCHEMA_VERSION = 1

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: str | None = None) -> None:
    logging.basicConfig(level=(level or SVI_LAB_LOG_LEVEL).upper(), format=_LOG_FORMAT)
