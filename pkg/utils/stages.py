"""Stage guard turning lab errors into recorded stage failures."""

import functools
import time

import numpy as np
from pydantic import ValidationError

from numerics.errors import ConfigurationError, LabError
from utils.logging_config import get_logger, log_performance
from utils.models import StageResult, StageStatus

logger = get_logger("stages")


def stage_guard(stage: str):
    """Wrap an async stage so that lab errors become a failed StageResult instead of propagating.

    ConfigurationError, ValidationError and ValueError map to a configuration failure.
    Every other LabError, LinAlgError and any unexpected exception (a scipy RuntimeError,
    a FloatingPointError) map to a numerical failure; unexpected ones are logged with
    their traceback.
    """

    def decorator(func):
        @functools.wraps(func)
        async def wrapper(*args, **kwargs) -> StageResult:
            start = time.time()
            try:
                result = await func(*args, **kwargs)
            except (ConfigurationError, ValidationError) as e:
                logger.error(f"Stage {stage}: invalid configuration: {e}")
                result = StageResult.error_result(stage, StageStatus.CONFIG_ERROR, str(e), [str(e)])
            except LabError as e:
                logger.error(f"Stage {stage}: {type(e).__name__}: {e}")
                result = StageResult.error_result(
                    stage, StageStatus.NUMERICAL_ERROR, f"{type(e).__name__}: {e}", [str(e)]
                )
            except np.linalg.LinAlgError as e:
                # LinAlgError subclasses ValueError but is a numerical breakdown
                logger.error(f"Stage {stage}: linear algebra failed: {e}")
                result = StageResult.error_result(
                    stage, StageStatus.NUMERICAL_ERROR, f"LinAlgError: {e}", [str(e)]
                )
            except ValueError as e:
                logger.error(f"Stage {stage}: rejected input: {e}")
                result = StageResult.error_result(stage, StageStatus.CONFIG_ERROR, str(e), [str(e)])
            except Exception as e:
                logger.exception(f"Stage {stage}: unexpected {type(e).__name__}: {e}")
                result = StageResult.error_result(
                    stage, StageStatus.NUMERICAL_ERROR, f"{type(e).__name__}: {e}", [str(e)]
                )
            result.seconds = time.time() - start
            log_performance(f"stage {stage}", result.seconds, status=result.status.value)
            return result

        return wrapper

    return decorator
