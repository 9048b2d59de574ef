import sys
from cx_Freeze import setup, Executable
from version import VERSION


# Bundled presets and the default synthetic spec
include_files = [
    ('resources/', 'resources/'),
]

build_exe_options = {
    'packages': ['numpy', 'psutil', 'toml'],
    'excludes': ['tkinter', 'unittest'],
    'include_files': include_files,
    'zip_include_packages': ['*'],
    'zip_exclude_packages': ['numpy'],  # numpy loads its extension modules from disk
    'build_exe': f'build/vibcrnn_{VERSION}',
    'optimize': 2
}

executables = [
    Executable(
        'main.py',
        base=None,  # console application on every platform
        target_name='vibcrnn.exe' if sys.platform == 'win32' else 'vibcrnn',
    )
]

setup(
    name='vibcrnn',
    version=VERSION,
    description='CNN+LSTM bearing fault classifier for raw vibration signals',
    options={'build_exe': build_exe_options},
    executables=executables
)

# python setup.py build
