from app.detect import DETECTORS
from app.utils.process_timeseries import CSV_COLUMNS
from app.vehicle import ATTACK_KINDS, NOISE_DISTRIBUTIONS

CAPABILITIES = {
    "attack_kinds": list(ATTACK_KINDS),
    "noise_distributions": list(NOISE_DISTRIBUTIONS),
    "detectors": list(DETECTORS),
    "csv_columns": list(CSV_COLUMNS),
}
