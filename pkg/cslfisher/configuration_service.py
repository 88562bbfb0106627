import logging
import os
from typing import Any, Optional

logger = logging.getLogger(__name__)

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


class ConfigurationService:
    """
    Runtime settings for cslfisher.

    Values come from the constructor first and the process environment second. Sweep physics is never configured here,
    it lives in the sweep files read by sweep_config.
    """

    def __init__(self, test_mode: bool = False, jobs: int = None, log_level: str = None):
        """
        Args:
            test_mode: Return fixed test values and ignore the environment.
            jobs: Worker count, takes precedence over CSLFISHER_JOBS.
            log_level: Logging level name, takes precedence over CSLFISHER_LOG_LEVEL.
        """
        self._test_mode = test_mode
        self._jobs = jobs
        self._log_level = log_level

    '''
    Runtime

    Env's:
        CSLFISHER_JOBS=Number of worker processes used by sweeps. Defaults to the CPU count. Legacy key CSL_JOBS.
        CSLFISHER_LOG_LEVEL=Logging level name.
        CSLFISHER_CONFIG=Sweep config file used when --config is not given.
    '''

    @property
    def jobs(self) -> int:
        raw = self._check_if_value_exists('CSLFISHER_JOBS', self._jobs, 1, os.cpu_count() or 1,
                                          legacy_key_name='CSL_JOBS')
        try:
            jobs = int(raw)
        except (TypeError, ValueError):
            raise InvalidEnviron('CSLFISHER_JOBS', raw)
        if jobs < 1:
            raise InvalidEnviron('CSLFISHER_JOBS', raw)
        return jobs

    @property
    def log_level(self) -> str:
        level = str(self._check_if_value_exists('CSLFISHER_LOG_LEVEL', self._log_level, 'WARNING',
                                                'WARNING')).upper()
        if level not in LOG_LEVELS:
            raise InvalidEnviron('CSLFISHER_LOG_LEVEL', level)
        return level

    @property
    def default_config_path(self) -> Optional[str]:
        return self._check_if_value_exists('CSLFISHER_CONFIG')

    '''
    # End Properties
    '''

    def _check_if_value_exists(self,
                               key_name: str,
                               assigned_value: Any = None,
                               test_response: Any = None,
                               default_value: Any = None,
                               legacy_key_name: str = None) -> Any:
        """
        Resolves one setting.

        Order: assigned_value, test_response (test mode only), the key_name variable, the legacy_key_name variable,
        default_value. Empty strings count as unset.

        Args:
            key_name: Environment variable holding the setting.
            assigned_value: Value given to the constructor.
            test_response: Returned in test mode.
            default_value: Fallback when neither variable is set.
            legacy_key_name: Older variable name still honoured, with a deprecation warning.

        Returns:
            The resolved value, or None.
        """
        if assigned_value:
            return assigned_value
        if self._test_mode:
            return test_response

        value = os.environ.get(key_name)
        if value:
            return value

        legacy = os.environ.get(legacy_key_name) if legacy_key_name else None
        if legacy:
            logger.warning(f'{legacy_key_name} has been deprecated. Please update your env file to use {key_name}')
            return legacy

        if default_value:
            return default_value
        return None


class InvalidEnviron(Exception):
    """Raised when an environment variable is set to a value that cannot be used"""

    def __init__(self, env_var_name, value):
        self.env_var_name = env_var_name
        self.message = f'The environment variable {self.env_var_name} has an invalid value: {value!r}'
        super().__init__(self.message)
