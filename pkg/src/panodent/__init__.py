"""panodent: report-driven labeling and rater-agreement evaluation for
dental panoramic radiographs.

The pipeline parses textual reports into per-tooth condition labels
(noun-phrase extraction plus a tooth-condition linkage step), turns
segmentation output into fixed-size tooth crops with split/oversampling
manifests, and evaluates classifiers and human raters with MCC, Fleiss'
kappa, consensus ground truth, and OLS trend fits.
"""

__version__ = "0.1.0"
