"""Spectral signal-noise analysis of neural-network training trajectories.

The pipeline: a canonical checkpoint store yields parameter deltas; their
pairwise dot-product matrix is computed once (optionally from streamed
Johnson-Lindenstrauss sketches); rolling-window Gram spectra turn into
observable series (spectral edge ratio, signal rank, variance ranks,
drift speed); and those series couple to a validation-loss series through
lag scans, phase-aware correlation, Granger tests, and shift detectors.
"""

from .changepoint import (ShiftDetection, detect_cusum,
                          detect_max_derivative, detect_ttest,
                          score_detection)
from .gram import (DotMatrix, GramMatrix, Spectrum, dot_matrix,
                   dot_matrix_from_store, eig_sym, group_dot_matrix,
                   load_dot_matrix, save_dot_matrix, window_gram)
from .sketch import (SketchConfig, SketchVector, default_d, load_sketches,
                     project, project_store, sketch_dot_matrix)
from .spectral import (MpNull, ObservableSeries, SpectralSummary,
                       bbp_excess, mp_null, rolling_series, series_to_csv,
                       series_to_json, split_half, summarize)
from .store import (DeltaVector, KeySpan, Manifest, ParamVector,
                    StoreError, build_manifest, compute_delta, group_spans,
                    iter_deltas, load_vector, read_manifest,
                    write_raw_checkpoint)
from .synth import (GroundTruth, NoiseSpec, Schedule, SpikePlan,
                    gen_coupled_loss, gen_store, gen_trajectory,
                    oracle_spectrum)
from .timeseries import (GrangerResult, LagCorrelation, MetricSeries,
                         PhaseSegmentation, align, collapse_onset,
                         detrend_cubic, granger, granger_multivariate,
                         phase_corr, rank_ratios, rank_tracks,
                         read_metric_csv, residualized_granger,
                         segment_phases, sliding_corr, xcorr_lagscan,
                         zscore)

__version__ = "0.1.0"
