import sys
import time
from typing import List, Optional

import pydantic

from app.core.config import settings
from app.core.exceptions import AdmissibilityError, CrcError, EmptyEnsembleError, ValidationError
from app.core.logger import logger, log_command, log_error
from app.routes import HANDLERS, parse_run_config


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _describe_validation(error: pydantic.ValidationError) -> str:
    lines = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "config"
        lines.append(f"  {where}: {item['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


def run_command(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv, run one command and map its outcome to an exit code:
    0 success, 1 validation or usage error, 2 admissibility, empty ensemble
    or any other engine error (unwritable output included).
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    name = argv[0] if argv else "-"
    start = time.perf_counter()
    status = EXIT_OK
    try:
        cfg = parse_run_config(argv)
        name = cfg.command
        logger.info(f"{settings.APP_NAME} v{settings.APP_VERSION} - {name}")
        status = HANDLERS[cfg.command](cfg)
    except pydantic.ValidationError as e:
        logger.error(_describe_validation(e))
        status = EXIT_VALIDATION
    except ValidationError as e:
        logger.error(f"validation error: {e}")
        status = EXIT_VALIDATION
    except AdmissibilityError as e:
        logger.error(f"not admissible: {e}")
        status = EXIT_RUNTIME
    except EmptyEnsembleError as e:
        logger.error(f"no usable paths: {e}")
        status = EXIT_RUNTIME
    except CrcError as e:
        log_error(e, f"command {name} failed")
        status = EXIT_RUNTIME
    except SystemExit as e:
        # --help
        status = int(e.code or 0)
    log_command(name, status, time.perf_counter() - start)
    return status


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
