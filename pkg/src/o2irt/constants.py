"""Physical constants and the default carrier bands."""

SPEED_OF_LIGHT = 299_792_458.0  # m/s

BAND_4G = 4.65e9
BAND_14G = 14.25e9
DEFAULT_BANDS = (BAND_4G, BAND_14G)
DEFAULT_BANDWIDTH = 500e6

MAX_BOUNCES = 4
DELAY_LIMIT_NS = 350.0
DYNAMIC_RANGE_DB = 20.0
DELAY_RESOLUTION_NS = 2.0
AZIMUTH_RESOLUTION_DEG = 5.0


def wavelength(frequency: float) -> float:
    if frequency <= 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    return SPEED_OF_LIGHT / frequency
