class UnknownConfigKeyWarning(UserWarning):
    """
    A configuration file contained a key that is not understood and was
    ignored.
    """


class TokenModeWarning(UserWarning):
    """
    A token set was supplied to an operation that does not use it.
    """
