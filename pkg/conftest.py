import os
import sys

# Add the python directory to the path so imports like 'layered_fmm.xxx' work
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'python'))


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: acceptance-size runs (deselect with '-m \"not slow\"')"
    )
