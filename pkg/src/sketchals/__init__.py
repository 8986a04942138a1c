"""Randomized (sketched) ALS for Tucker and CP tensor decomposition."""

from .tensors import (
    CPModel,
    SparseTensor,
    TuckerModel,
    fitness,
    fold,
    khatri_rao,
    matricize,
    matricize_t,
    mttkrp,
    read_tensor,
    tensor_norm,
    ttm,
    ttmc,
    write_tensor,
)
from .linalg import (
    LeverageProfile,
    RankDeficientError,
    SvdResult,
    leverage_scores,
    reduced_qr,
    rsvd_lrls,
    thin_svd,
    truncated_svd,
)
from .sketching import (
    CompositeSketchOp,
    CountSketchOp,
    LevSamplerOp,
    TensorSketchOp,
    composite_apply,
    lev_apply,
    lev_apply_krp,
    lev_build,
    ts_apply_kron,
    ts_apply_rhs,
)
from .tucker import (
    SweepTrace,
    TuckerConfig,
    hooi,
    hosvd_init,
    init_rrf,
    load_tucker,
    ref_tucker_ts,
    save_tucker,
    sketched_tucker_als,
)
from .cp import (
    CPConfig,
    cp_als,
    cp_via_sketched_tucker,
    load_cp,
    save_cp,
    sketched_cp_als,
)
from .synth import SynthSpec, generate
from .harness import (
    ExperimentSpec,
    RunRecord,
    run_experiment,
    run_single,
    summarize,
    write_records_csv,
    write_summary_csv,
)

__version__ = "0.1.0"
