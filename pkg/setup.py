import codecs
import os.path

from setuptools import setup, find_packages

def read(rel_path):
    here = os.path.abspath(os.path.dirname(__file__))
    with codecs.open(os.path.join(here, rel_path), 'r') as fp:
        return fp.read()

def get_version(rel_path):
    for line in read(rel_path).splitlines():
        if line.startswith('__version__'):
            delim = '"' if '"' in line else "'"
            return line.split(delim)[1]
    else:
        raise RuntimeError("Unable to find version string.")

setup(name='WNet-DSM',
      version=get_version('wnet_dsm/_version.py'),
      packages=find_packages(exclude=['tests']),
      python_requires='>=3.9',
      install_requires=[
          'numpy',
          'scipy',
          'torch>=2.0',
          'logbook',
          'path<17',
          'pyqtgraph',
          'PyQt5',
          'pyyaml',
      ],
      extras_require={
          'geotiff': ['rasterio'],
          'test': ['pytest', 'pytest-mock'],
      },
      entry_points={
          'console_scripts': [
              'wnet-dsm = wnet_dsm.__main__:main',
              'WNet-DSM = wnet_dsm.__main__:main'
          ]}
     )
