"""
Model and dataset constants for the road-fatality forecaster
Centralizes table schemas, feature lists and artifact names so every
stage agrees on them
"""

# Table identifiers - use these consistently across the codebase
class TableNames:
    COLLISIONS = "collisions"
    CASUALTIES = "casualties"
    VEHICLES = "vehicles"

    ALL = (COLLISIONS, CASUALTIES, VEHICLES)


# Column headers assigned to each exported DfT sheet, in sheet order
TABLE_HEADERS = {
    TableNames.COLLISIONS: [
        "year", "fatal", "fsc_unadjusted", "fsc_adjusted", "all_collisions",
    ],
    TableNames.CASUALTIES: [
        "year", "pedestrians_killed", "pedal_cyclists_killed", "motorcyclists_killed",
        "car_occupants_killed", "other_road_users_killed", "all_road_users_killed",
        "all_road_users_all_severities",
    ],
    TableNames.VEHICLES: [
        "year", "pedal_cycles", "motorcycles", "cars", "buses_or_coaches",
        "light_goods_vehicles", "heavy_goods_vehicles", "other_vehicles",
        "unknown_vehicles", "all_vehicles",
    ],
}

# Preamble rows above the data in each exported sheet
DEFAULT_SKIP_ROWS = {
    TableNames.COLLISIONS: 6,
    TableNames.CASUALTIES: 7,
    TableNames.VEHICLES: 4,
}

YEAR_COLUMN = "year"
TARGET_COLUMN = "all_road_users_killed"

# Reference feature list, target included
REFERENCE_FEATURE_COLUMNS = [
    "all_collisions", "all_road_users_killed", "all_road_users_all_severities",
    "pedal_cycles", "motorcycles", "cars", "buses_or_coaches",
    "light_goods_vehicles", "heavy_goods_vehicles", "other_vehicles",
    "unknown_vehicles", "all_vehicles",
]

VEHICLE_TYPE_COLUMNS = [
    "pedal_cycles", "motorcycles", "cars", "buses_or_coaches",
    "light_goods_vehicles", "heavy_goods_vehicles", "other_vehicles", "unknown_vehicles",
]


class VariantNames:
    LSTM = "lstm"
    SR = "sr"

    LSTM_DISPLAY = "Stacked LSTM"
    SR_DISPLAY = "Self-Regulating LSTM"


VARIANT_TO_DISPLAY = {
    VariantNames.LSTM: VariantNames.LSTM_DISPLAY,
    VariantNames.SR: VariantNames.SR_DISPLAY,
}


class ArtifactNames:
    MERGED_TABLE = "merged_cleansed.csv"
    SCALE_PARAMS = "scale_params.json"
    CHECKPOINT = "checkpoint.json"
    HISTORY = "history.csv"
    EVAL_REPORT = "eval_report.json"
    TREND_REPORT = "trend_report.csv"
    CORRELATIONS = "correlations.csv"

    ALL = (MERGED_TABLE, SCALE_PARAMS, CHECKPOINT, HISTORY, EVAL_REPORT, TREND_REPORT, CORRELATIONS)


class ExitCodes:
    OK = 0
    INPUT_ERROR = 2
    DIVERGENCE = 3
    CONFIG_ERROR = 4


def feature_columns(paper_faithful: bool = False, target: str = TARGET_COLUMN) -> list:
    """Model inputs; the target is dropped unless the full reference list is requested"""
    if paper_faithful:
        return list(REFERENCE_FEATURE_COLUMNS)
    return [col for col in REFERENCE_FEATURE_COLUMNS if col != target]


def get_variant_display_name(variant: str) -> str:
    """Convert variant identifier to display name"""
    return VARIANT_TO_DISPLAY.get(variant, variant)
