"""CINF Lab: streaming outlier-noise mitigation by complementary intermittently nonlinear filtering."""

__version__ = "0.4.0"

from cinf_lab.core.signal_core import Signal  # noqa: E402
from cinf_lab.core.linear_filters import FilterKernel, design_complementary_pair  # noqa: E402
from cinf_lab.core.nonlinear_core import BasicAdic, FeedbackAdic, blank, tukey_fences  # noqa: E402
from cinf_lab.core.caf_pipeline import CafConfig, caf_process, digital_front_end  # noqa: E402
from cinf_lab.errors import CinfError  # noqa: E402

__all__ = [
    "__version__",
    "Signal",
    "FilterKernel",
    "design_complementary_pair",
    "BasicAdic",
    "FeedbackAdic",
    "blank",
    "tukey_fences",
    "CafConfig",
    "caf_process",
    "digital_front_end",
    "CinfError",
]
