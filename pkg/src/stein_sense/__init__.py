"""James-Stein, maximum-likelihood and Bayes estimation for Gaussian
sensing models, with Monte Carlo risk evaluation and postselective
filtering."""

from .estimators import Bayes, GaussianPrior, MeanJs, Mle, NuJs
from .gauss_core import SeededRng, SPDMatrix, mvn_sample, rng_fork, spd_validate
from .risk_engine import RiskEstimate, RiskMethod, ValueWithError, advantage
from .sensing_models import ModelPoint, Strategy, model_distribution

__version__ = "0.1.0"

__all__ = [
    "Bayes",
    "GaussianPrior",
    "MeanJs",
    "Mle",
    "ModelPoint",
    "NuJs",
    "RiskEstimate",
    "RiskMethod",
    "SPDMatrix",
    "SeededRng",
    "Strategy",
    "ValueWithError",
    "advantage",
    "model_distribution",
    "mvn_sample",
    "rng_fork",
    "spd_validate",
    "__version__",
]
