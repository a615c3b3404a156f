"""Intentionally malformed input files, >= 10 per loader.

Each entry: (name, file text, substring expected in the error message).
The loaders must reject every one with a located error, never a crash or a
silent default.
"""

HKL_BAD = [
    ("three_columns", "1 0 0\n", "expected 'h k l F'"),
    ("five_columns", "1 0 0 5.0 9.0\n", "expected 'h k l F'"),
    ("float_h", "1.5 0 0 5.0\n", "integers"),
    ("float_k", "1 0.2 0 5.0\n", "integers"),
    ("text_l", "1 0 x 5.0\n", "integers"),
    ("bad_amplitude", "1 0 0 five\n", "number"),
    ("negative_amplitude", "1 0 0 -2.0\n", ">= 0"),
    ("nan_amplitude", "1 0 0 nan\n", ">= 0"),
    ("inf_amplitude", "1 0 0 inf\n", ">= 0"),
    ("second_line_bad", "1 0 0 5.0\n2 0 0\n", ":2"),
    ("huge_index", "2000000 0 0 5.0\n", "range"),
]

BACKGROUND_BAD = [
    ("one_column", "0.1\n", "expected 'stol f_bg'"),
    ("three_columns", "0.1 2.0 3.0\n", "expected 'stol f_bg'"),
    ("text_value", "0.1 two\n", "numbers"),
    ("single_point", "0.0 2.5\n", "at least 2 points"),
    ("empty_file", "# nothing\n", "at least 2 points"),
    ("non_monotone", "0.0 2.5\n0.2 3.0\n0.1 4.0\n", "not greater than"),
    ("duplicate_stol", "0.0 2.5\n0.0 3.0\n", "not greater than"),
    ("negative_stol", "-0.1 2.5\n0.2 3.0\n", ">= 0"),
    ("negative_amplitude", "0.0 -2.5\n0.2 3.0\n", ">= 0"),
    ("nan_amplitude", "0.0 nan\n0.2 3.0\n", ">= 0"),
    ("inf_amplitude", "0.0 inf\n0.2 3.0\n", ">= 0"),
]

_MINIMAL = """
[crystal]
cell = [100.0, 100.0, 100.0, 90.0, 90.0, 90.0]
n_cells = [5, 5, 5]

[detector]
slow_pixels = 4
fast_pixels = 4
pixel_size_m = 100e-6
distance_m = 0.1
beam_center = [1.5, 1.5]

[beam]
wavelengths = [1.0]
fluence = 1e24
"""

CONFIG_BAD = [
    ("not_toml", "this is } not toml [", "not valid TOML"),
    ("unknown_section", _MINIMAL + "[detectors]\nx = 1\n", "unknown section"),
    ("unknown_key", _MINIMAL.replace("distance_m", "detectro_distance"),
     "detectro_distance"),
    ("missing_section", _MINIMAL.replace("[beam]", "[simulation]")
     .replace("wavelengths = [1.0]", "oversample = 1")
     .replace("fluence = 1e24", "seed = 0"), "missing required section [beam]"),
    ("missing_cell", _MINIMAL.replace("cell = [100.0, 100.0, 100.0, 90.0, 90.0, 90.0]\n", ""),
     "crystal.cell"),
    ("short_cell", _MINIMAL.replace("[100.0, 100.0, 100.0, 90.0, 90.0, 90.0]",
                                    "[100.0, 100.0, 100.0]"), "crystal.cell"),
    ("negative_pixel", _MINIMAL.replace("pixel_size_m = 100e-6", "pixel_size_m = -1e-6"),
     "pixel_size"),
    ("bad_angle", _MINIMAL.replace("90.0, 90.0, 90.0]", "90.0, 90.0, 190.0]"),
     "crystal.cell"),
    ("zero_n_cells", _MINIMAL.replace("n_cells = [5, 5, 5]", "n_cells = [0, 5, 5]"),
     "n_cells"),
    ("empty_wavelengths", _MINIMAL.replace("wavelengths = [1.0]", "wavelengths = []"),
     "wavelengths"),
    ("weight_length_mismatch", _MINIMAL.replace(
        "fluence = 1e24", "weights = [1.0, 2.0]\nfluence = 1e24"), "weights"),
    ("negative_fluence", _MINIMAL.replace("fluence = 1e24", "fluence = -1.0"),
     "fluence"),
    ("bad_oversample", _MINIMAL + "[simulation]\noversample = 0\n", "oversample"),
    ("background_needs_profile", _MINIMAL + "[background]\nthickness_factor = 1.0\n",
     "profile_path or stol"),
    ("bad_orientation", _MINIMAL.replace(
        "n_cells = [5, 5, 5]", "n_cells = [5, 5, 5]\norientation = [2,0,0, 0,1,0, 0,0,1]"),
     "orientation"),
]
