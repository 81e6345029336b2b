from calyx_assess.formats.features import read_features, write_features
from calyx_assess.formats.ply import PlyData, read_ply, write_ply
from calyx_assess.formats.reader import read_file

__all__ = ["PlyData", "read_features", "read_file", "read_ply", "write_features", "write_ply"]
