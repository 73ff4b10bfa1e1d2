"""Exception type shared by every module."""


class QoedError(ValueError):
    """Raised when an operation receives input it cannot handle.

    ``code`` is a short stable identifier (``"no-samples"``, ``"bad-index"``,
    ...) that callers and tests can match on without parsing the message.
    """

    def __init__(self, code, message=None):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)
