"""Monte Carlo samplers and statistical checks for sigma-finite path measures.

The public surface is re-exported here; see the submodules for details.
"""

from __future__ import annotations

from .errors import BudgetExhausted, ConfigurationError, UnsupportedError
from .estimators import (
    ONE,
    ZERO,
    CylinderFunctional,
    EstimatorResult,
    constant,
    indicator_abs_le,
    indicator_last_zero_le,
    indicator_positive,
    sign_at,
)
from .functionals import (
    ClassSigmaPath,
    Deterministic,
    Exponential,
    HittingLevel,
    IndicatorInterval,
    MinOf,
    PiecewiseConstant,
    azema_projection,
    build_abs_bm_levy,
    build_bessel_scale,
    build_drawdown,
    build_positive_part,
    eval_stopping_time,
    first_zero_after,
    inverse_local_time,
    last_zero,
    mf_transform,
)
from .grid import TimeGrid
from .models import Model
from .paths import (
    Kind,
    PathSample,
    ProcessSpec,
    extend_path,
    simulate,
    simulate_bessel,
    simulate_bm,
    simulate_exp_martingale,
)
from .pricing import PutSpec, bs_closed_form, last_passage_cdf, mc_put_price, price_report
from .qsampler import (
    BS_KP,
    CLASS_D,
    Q_ABS_BM,
    W,
    W_MINUS,
    W_PLUS,
    LevelProposal,
    MeasureTag,
    Q_BESSEL,
    S_AZEMA,
    WeightedSample,
    bs_measure_expectation,
    parse_tag,
    q_integral,
    reweight_class_d,
    sample_azema_image,
    sample_q_spliced,
)
from .verify import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    IdentityReport,
    VerifyConfig,
    azema_slope,
    verify_ainf_image,
    verify_azema,
    verify_class_d,
    verify_doob,
    verify_martingale_constancy,
    verify_master,
    verify_nf_density,
    verify_stopping,
)

__version__ = "0.1.0"
