from .metrics import (CongruenceMetric, DenseMetric, LocalMetric, LowRankMetric,
                      OperatorMetric, ScaledIdentity, ScaledMetric,
                      extreme_eigenvalues, power_iteration)
from .regularizers import (BoxIndicator, ElasticNet, L1Norm, OriginIndicator, Regularizer, offdiag_l1,
                           SimplexIndicator, Zero, project_simplex, prox_l1,
                           subgradient_select)
from .smooth import (CovarianceDual, CovariancePrimal, LogBarrierLinear, LogDetDesign,
                     LogisticLoss, PoissonLoss, QuadraticLoss, ScaledOracle,
                     SmoothOracle, self_concordance_convert, standardizing_scale)
