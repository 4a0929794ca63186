from enum import Enum


class LogLevel(str, Enum):
    ERROR = "error"
    INFO = "info"
    DEBUG = "debug"


class StatsLevel(str, Enum):
    FRAME = "frame"
    STATE = "state"


# Where an aggregated value came from when its own region had nothing to average
class FeatureSource(str, Enum):
    STATE = "state"
    RUN = "run"
    PHONE = "phone"
    UTTERANCE = "utterance"
    NONE = "none"


class DurationSource(str, Enum):
    PHONE = "phone"
    GLOBAL = "global"


class ExitCode(int, Enum):
    OK = 0
    USAGE = 1
    DATA = 2


class Preference(str, Enum):
    A = "a"
    B = "b"
    NONE = "none"
