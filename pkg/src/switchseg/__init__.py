"""Hidden Markov switching models: HMM, switching AR, explicit-duration and switching linear Gaussian state-space."""
from switchseg.errors import (EnumerationGuardError, ImpossibleDataError, MixtureCapError, ModelValidationError,
                              NumericalError, RegimeStarvationError, SwitchsegError)
from switchseg.model import (AutoregressiveEmission, DurationSpec, GaussianMixtureEmission, LinearGaussianEmission,
                             SwitchingModel, TimeSeries, TransitionModel, ValidationReport, geometric_duration_pmf,
                             hazard_to_pmf, pmf_to_hazard, validate_model)
from switchseg.discrete import (EMConfig, EMResult, PosteriorTables, ViterbiResult, em_fit, smooth_gmm,
                                smooth_gmm_chained, smooth_parallel, smooth_sequential, viterbi)
from switchseg.duration import CountIndexedTables, count_smooth, dc_forward, dc_forward_naive, dc_smooth, dc_viterbi, \
    ic_smooth
from switchseg.segmental import (SegmentLikelihood, seg_backward, seg_forward, seg_posteriors, seg_sample_path,
                                 seg_smooth, seg_viterbi)
from switchseg.slgssm import (FilterResult, changepoint_two_state, dur_filter_dc, dur_filter_dc_reset,
                              dur_filter_ic_reset, filter_model, slgssm_filter, slgssm_smooth)
from switchseg.synth import (LabeledSeries, gen_sarm_switching, gen_switching_sinusoid, read_series_csv,
                             segmentation_error, write_labeled_csv)

__version__ = "0.1.0"
