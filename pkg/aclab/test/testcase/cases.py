"""Reference values shared by the test modules."""

REFERENCE_LAMBDA = {7: 5.70, 8: 6.70, 9: 7.70, 10: 8.70, 11: 9.70, 12: 10.70, 13: 11.70, 14: 12.70}
REFERENCE_GAMMA = {7: 1.7573, 8: 1.4839, 9: 1.3672, 10: 1.2985, 11: 1.2523, 12: 1.2189, 13: 1.1934, 14: 1.1734}
LAMBDA_TOL = 0.02
GAMMA_TOL = 5e-3

FLAT_OFFSET = 0.3

# (geometry flag, data flag, h) for CLI smoke runs
CLI_SOLVE_CASES = [
    {"id": "flat_planar", "geometry": "planar", "data": "flat:0.25", "h": "0.0625"},
    {"id": "flat_box", "geometry": "planar-box", "data": "flat:0.25", "h": "0.0625"},
]

BAD_CONFIG_CASES = [
    {"id": "unknown_geometry", "argv": ["solve", "--geometry", "sphere", "--data", "flat:0.3"]},
    {"id": "bad_split", "argv": ["cone", "--dim", "7", "--split", "4;3"]},
    {"id": "split_sum", "argv": ["cone", "--dim", "7", "--split", "4,4"]},
    {"id": "cone_on_planar", "argv": ["solve", "--geometry", "planar", "--data", "cone"]},
    {"id": "h_out_of_range", "argv": ["solve", "--geometry", "planar", "--data", "flat:0.3", "--h", "2"]},
]
