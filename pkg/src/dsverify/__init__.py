"""Dataset certification verifier.

Parses a dataset requirement document, runs its verification plan over a
metadata manifest, merges manual attestations and renders a traceable report.
"""

from .astro import derive_feature, julian_day, solar_elevation, solar_state
from .checks import (
    check_class_proportion,
    check_dataset_size,
    check_histogram_compliance,
    check_metadata_conformity,
    check_session_homogeneity,
    check_split_integrity,
    run_all,
)
from .manifest import DatasetManifest, DatasetRecord, FixtureParams, GeoPoint, dataset_digest, generate_fixture, load_manifest
from .outcomes import CheckOutcome, Verdict
from .report import exit_code, merge_attestations, render_report, traceability_matrix
from .spec_model import default_catalog, parse_drs, render_drs, validate_drs
from .stats import chi_square_pvalue, required_sample_size

__version__ = "0.1.0"
