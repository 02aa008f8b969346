"""Configuration settings for the voucher analyzer"""

import os
from pathlib import Path

CONFIG_DIR = Path(__file__).resolve().parent

# Output directory
OUTPUT_DIR = os.environ.get("VOUCHER_OUTPUT_DIR", "output")

# Shipped configuration files
VOUCHER_CONFIG = CONFIG_DIR / "vouchers.json"
SECTOR_TABLE = CONFIG_DIR / "sector_table.csv"
SCENARIO_FILE = CONFIG_DIR / "scenarios.json"
POPULATION_FILE = CONFIG_DIR / "population.json"

TOOL_VERSION = "1.0.0"

# Inference defaults
ALPHA = 0.05
REPLICATIONS = 2000
SEED = 20230301
SEED_LIMIT = 2**64
WORKERS = 1
INTERVAL_MODES = ("two_sided", "one_sided")

# Program voucher types, in survey order
VOUCHER_KINDS = (
    "accommodation",
    "dining",
    "cultural",
    "sports",
    "market",
    "agricultural",
)

WAVES = ("original", "extra")

# Raw demographic answer sets
GENDERS = ("male", "female")
RESIDENCES = ("taipei", "northern_adjacent", "other")
AGE_BANDS = ("under_20", "20_29", "30_39", "40_49", "50_59", "60_plus")

# Coarsening used by the published tables
COARSENING = {
    "gender": {"male": "male", "female": "female"},
    "residence": {
        "taipei": "taipei",
        "northern_adjacent": "other_cities",
        "other": "other_cities",
    },
    "age": {
        "under_20": "under_30",
        "20_29": "under_30",
        "30_39": "30_49",
        "40_49": "30_49",
        "50_59": "over_49",
        "60_plus": "over_49",
    },
}

# Record field backing each stratification dimension
DIMENSION_FIELDS = {
    "gender": "gender",
    "residence": "residence",
    "age": "age_band",
}

FINEST_DIMENSIONS = ("gender", "residence", "age")

# Survey file schema
SURVEY_COLUMNS = (
    "respondent_id",
    "voucher_type",
    "gender",
    "residence",
    "age_band",
    "triggered",
    "bracket_index",
    "wave",
)

TRIGGERED_ANSWERS = {"yes": True, "no": False}

# Regional table
SECTOR_COUNT = 19
ADDED_VALUE_ROW = "added_value"

# Report formats
REPORT_FORMATS = ("csv", "json", "text")
REPORT_DECIMALS = 3
