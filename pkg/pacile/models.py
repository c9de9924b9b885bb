"""
Enumerations shared across the toolkit
"""
import enum


class LossName(str, enum.Enum):
    """Supported task losses"""
    HAMMING = "hamming"
    ZERO_ONE = "zero-one"


class KernelKind(str, enum.Enum):
    """Input-space kernels"""
    LINEAR = "linear"
    COSINE = "cosine"
    GAUSSIAN = "gaussian"


class Parametrization(str, enum.Enum):
    """Posterior variance choice"""
    UNIT = "unit"
    WIDE = "wide"
    CUSTOM = "custom"


class BoundKind(str, enum.Enum):
    CLASSIFICATION = "classification"
    AUGMENTED_EXCESS = "augmented-excess"
    KDE = "kde"


class EmpiricalMode(str, enum.Enum):
    """How the empirical term of the excess-risk bound was obtained"""
    EXACT = "exact"
    SURROGATE = "surrogate"


class GStarSource(str, enum.Enum):
    """Where the norm of the conditional mean embedding came from"""
    ORACLE = "oracle"
    PLUG_IN = "plug-in"


class CertificateFlag(str, enum.Enum):
    """Reasons a certificate is reported but not certified"""
    SURROGATE_EMPIRICAL = "surrogate"
    PLUG_IN_G_STAR = "plug-in, non-certified"
    N_BELOW_SIX = "n-params below 6"
    DATA_DEPENDENT_SELECTION = "data-dependent selection: certificate not valid as stated"


class ScheduleMode(str, enum.Enum):
    """Step-size schedules"""
    DECAYING = "decaying"
    CONSTANT = "constant"


class Algorithm(str, enum.Enum):
    """Learning algorithms exposed by the CLI"""
    ILE = "ile"
    RELAX_PB = "relax-pb"
    MC_PB = "mc-pb"
