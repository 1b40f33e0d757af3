"""Two-variable Oregonator on disc and annulus lattices with virtual
electrodes, excitability programs and period analysis."""
from bzmarble.analysis import (
    PeriodDetector,
    PeriodStats,
    SegmentedPeriodRegressor,
    SpikeShape,
    classify_spike,
    detect_periods,
    fit_period_curve,
    period_ratio,
)
from bzmarble.core import (
    DivergenceError,
    DomainError,
    IntegratorConfig,
    OregonatorParams,
    SimState,
    euler_step,
    integrate,
    resting_state,
    steady_state,
)
from bzmarble.geometry import (
    Mask,
    RectDomain,
    StimulusMode,
    StimulusSite,
    make_annulus_mask,
    make_disc_mask,
    stimulate,
)
from bzmarble.measurement import ElectrodePair, PotentialRecorder, PotentialTrace, measure_potential
from bzmarble.schedule import PhiSchedule, Segment

__version__ = "0.1.0"
