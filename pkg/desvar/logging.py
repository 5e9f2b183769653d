import logging

logger = logging.getLogger("desvar")
_handler = logging.StreamHandler()
# Replication workers log through the same handler, tag them
_handler.setFormatter(logging.Formatter("%(levelname)s [%(processName)s] %(message)s"))
logger.addHandler(_handler)
