import textwrap

import pytest

from gaenkf.cases import write_valley_case

SMALL_CASE = """
[experiment]
mode = "IGDA"
n_members = 8
seed = 7
output = "out"

[model]
dem = "dem.asc"
zones = "zones.asc"
hydrograph = "hydrograph.csv"
inflow_cells = [[0, 6]]
outlet_cells = [[15, 5], [15, 6], [15, 7]]
outlet_slope = 3e-4
spinup_s = 21600
wet_threshold = 0.05
floodplain_zones = [2, 3]

[model.solver]
max_dt = 120.0

[[gauges]]
name = "Upper"
cell = [4, 6]

[[gauges]]
name = "Lower"
cell = [12, 6]

[[subdomains]]
rows = [2, 7]
cols = [2, 5]

[[subdomains]]
rows = [2, 7]
cols = [7, 10]

[[subdomains]]
rows = [9, 14]
cols = [2, 5]

[[subdomains]]
rows = [9, 14]
cols = [7, 10]

[truth]
friction = [32.5, 32.5, 15.6, 15.6]
inflow_multiplier = 0.85
depth_corrections = [0.3, 0.0, 0.0, 0.3]

[prior]
friction_mean = [25.0, 25.0, 12.0, 12.0]
friction_std = [5.0, 5.0, 3.0, 3.0]
friction_bounds = [5.0, 80.0]
multiplier_mean = 1.0
multiplier_std = 0.15
multiplier_bounds = [0.5, 1.5]
correction_std = 0.1

[cycles]
start_s = 0
length_s = 14400
count = 3
inflation = 1.1

[observations]
gauge_interval_s = 3600
gauge_std = 0.05
wsr_times_s = [28800, 43200]
wsr_std_transformed = 0.25
"""


@pytest.fixture(scope="session")
def small_case(tmp_path_factory):
    """Path of a 16 x 12 valley case with 8 members and 3 cycles."""
    root = tmp_path_factory.mktemp("case")
    write_valley_case(root, n_rows=16, n_cols=12, channel_col=6, wall_cols=1,
                      cell_size=500.0)
    path = root / "case.toml"
    path.write_text(textwrap.dedent(SMALL_CASE))
    return path
