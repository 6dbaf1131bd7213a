from typing import Any, Dict, Type

__all__ = [
    'CalibTokException',
    'ConfigError',
    'BadConfigFile',
    'IllegalConfig',
    'InvalidConfig',
    'BadFormat',
    'ShapeMismatch',
    'DimensionMismatch',
    'IOFailure',
    'NumericDomainError',
    'NonMonotone',
    'OutOfRange',
    'SamplingExhausted',
    'EmptyMask',
    'NonPositiveDepth'
]

EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class CalibTokException(Exception):
    """
    Base class for all exceptions produced by calibtok.
    """
    exit_code = EXIT_UNEXPECTED

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> 'CalibTokException':
        """
        Reconstructs an exception from its dictionary-based description.
        """
        assert 'kind' in d
        kinds = {cls.__name__: cls
                 for cls in _subclasses(CalibTokException)}
        cls = kinds[d['kind']]
        return cls.from_data(d.get('data', {}), d.get('message', ''))

    @classmethod
    def from_data(cls,
                  data: Dict[str, Any],
                  message: str
                  ) -> 'CalibTokException':
        return cls(message)  # type: ignore

    def __init__(self, message: str) -> None:
        self.__message = message
        super().__init__(message)

    @property
    def message(self) -> str:
        """
        A short description of the error.
        """
        return self.__message

    @property
    def data(self) -> Dict[str, Any]:
        return {}

    def to_dict(self) -> Dict[str, Any]:
        """
        Transforms this exception into a machine-readable description.
        """
        jsn = {
            'kind': self.__class__.__name__,
            'message': self.message
        }  # type: Dict[str, Any]
        data = self.data
        if data:
            jsn['data'] = data
        return jsn


def _subclasses(cls: Type[CalibTokException]):
    for sub in cls.__subclasses__():
        yield sub
        yield from _subclasses(sub)


class ConfigError(CalibTokException):
    """
    Base class for errors caused by ill-formed configuration or input.
    """
    exit_code = EXIT_CONFIG


class BadConfigFile(ConfigError):
    """
    Used to indicate that a given configuration file is ill-formed.
    """


class IllegalConfig(ConfigError):
    """
    Used to indicate that a given configuration is syntactically correct but
    that it describes an illegal configuration.
    """


class InvalidConfig(ConfigError):
    """
    The model configuration describes shapes that cannot be built.
    """


class BadFormat(ConfigError):
    """
    A file did not match its expected format.
    """
    @classmethod
    def from_data(cls, data: Dict[str, Any], message: str) -> 'BadFormat':
        assert 'reason' in data
        return BadFormat(data['reason'])

    def __init__(self, reason: str) -> None:
        self.__reason = reason
        super().__init__("unexpected format: {}".format(reason))

    @property
    def reason(self) -> str:
        return self.__reason

    @property
    def data(self) -> Dict[str, Any]:
        return {'reason': self.reason}


class ShapeMismatch(ConfigError):
    """
    An array does not have the shape demanded by the model configuration.
    """
    @classmethod
    def from_data(cls,
                  data: Dict[str, Any],
                  message: str
                  ) -> 'ShapeMismatch':
        return ShapeMismatch(data['name'],
                             tuple(data['expected']),
                             tuple(data['actual']))

    def __init__(self, name: str, expected: tuple, actual: tuple) -> None:
        self.__name = name
        self.__expected = tuple(expected)
        self.__actual = tuple(actual)
        msg = "shape mismatch for {}: expected {} but got {}"
        msg = msg.format(name, self.__expected, self.__actual)
        super().__init__(msg)

    @property
    def name(self) -> str:
        return self.__name

    @property
    def expected(self) -> tuple:
        return self.__expected

    @property
    def actual(self) -> tuple:
        return self.__actual

    @property
    def data(self) -> Dict[str, Any]:
        return {'name': self.name,
                'expected': list(self.expected),
                'actual': list(self.actual)}


class DimensionMismatch(ShapeMismatch):
    """
    An image or depth map does not match the dimensions of a warp field.
    """
    @classmethod
    def from_data(cls,
                  data: Dict[str, Any],
                  message: str
                  ) -> 'DimensionMismatch':
        return DimensionMismatch(data['name'],
                                 tuple(data['expected']),
                                 tuple(data['actual']))


class IOFailure(CalibTokException):
    """
    Failed to read or write a file.
    """
    exit_code = EXIT_IO

    @classmethod
    def from_data(cls, data: Dict[str, Any], message: str) -> 'IOFailure':
        return IOFailure(data['path'], data.get('reason', ''))

    def __init__(self, path: str, reason: str = '') -> None:
        self.__path = str(path)
        self.__reason = reason
        msg = "failed to access file: {}".format(path)
        if reason:
            msg = "{} ({})".format(msg, reason)
        super().__init__(msg)

    @property
    def path(self) -> str:
        return self.__path

    @property
    def data(self) -> Dict[str, Any]:
        return {'path': self.__path, 'reason': self.__reason}


class NumericDomainError(CalibTokException):
    """
    Base class for errors raised when a numerical precondition fails.
    """
    exit_code = EXIT_NUMERIC


class NonMonotone(NumericDomainError):
    """
    The radial distortion polynomial is not strictly increasing on
    [0, theta_max], so it cannot be inverted.
    """
    @classmethod
    def from_data(cls, data: Dict[str, Any], message: str) -> 'NonMonotone':
        return NonMonotone(data['k'], data['theta_max'])

    def __init__(self, k, theta_max: float) -> None:
        self.__k = [float(c) for c in k]
        self.__theta_max = float(theta_max)
        msg = "distortion {} is not monotone on [0, {}]"
        msg = msg.format(self.__k, self.__theta_max)
        super().__init__(msg)

    @property
    def data(self) -> Dict[str, Any]:
        return {'k': list(self.__k), 'theta_max': self.__theta_max}


class OutOfRange(NumericDomainError):
    """
    A radius lies outside of the image circle of a calibration.
    """
    @classmethod
    def from_data(cls, data: Dict[str, Any], message: str) -> 'OutOfRange':
        return OutOfRange(data['value'], data['limit'])

    def __init__(self, value: float, limit: float) -> None:
        self.__value = float(value)
        self.__limit = float(limit)
        msg = "value {} lies outside of [0, {}]".format(value, limit)
        super().__init__(msg)

    @property
    def data(self) -> Dict[str, Any]:
        return {'value': self.__value, 'limit': self.__limit}


class SamplingExhausted(NumericDomainError):
    """
    Rejection sampling failed to produce a monotone calibration.
    """
    @classmethod
    def from_data(cls,
                  data: Dict[str, Any],
                  message: str
                  ) -> 'SamplingExhausted':
        return SamplingExhausted(data['attempts'])

    def __init__(self, attempts: int) -> None:
        self.__attempts = attempts
        msg = "no monotone calibration found after {} attempts"
        super().__init__(msg.format(attempts))

    @property
    def data(self) -> Dict[str, Any]:
        return {'attempts': self.__attempts}


class EmptyMask(NumericDomainError):
    """
    No pixel is jointly valid in the inputs of a reduction.
    """
    def __init__(self, message: str = "joint validity mask is empty") -> None:
        super().__init__(message)


class NonPositiveDepth(NumericDomainError):
    """
    A jointly valid depth value is not strictly positive.
    """
    def __init__(self,
                 message: str = "depth values must be strictly positive"
                 ) -> None:
        super().__init__(message)
