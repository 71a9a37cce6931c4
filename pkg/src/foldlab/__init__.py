"""foldlab: group actions on trees over free products of cyclic groups."""
__version__ = "0.1.0"
