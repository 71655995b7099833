class WNetError(Exception):

    pass


class FormatError(WNetError):

    pass


class CorruptionError(WNetError):

    pass


class ParameterError(WNetError, ValueError):

    pass


class ValidationError(WNetError, ValueError):

    pass


class InputError(WNetError, ValueError):

    pass


class EvaluationError(WNetError):

    pass


class CompatibilityError(WNetError):

    pass


class ConfigError(WNetError):

    pass


class NonFiniteLossError(WNetError):

    def __init__(self, msg, snapshot=None):

        super(NonFiniteLossError, self).__init__(msg)
        self.snapshot = snapshot


#errors caused by what the user passed in, reported with exit code 2
USAGE_ERRORS = (ParameterError,
                ValidationError,
                InputError,
                FormatError,
                CorruptionError,
                ConfigError,
                CompatibilityError,
                FileNotFoundError)
