from qkdlab.cli import entry_point

entry_point()
