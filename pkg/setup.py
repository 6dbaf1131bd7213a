import os
import setuptools

path = os.path.join(os.path.dirname(__file__), 'src/calibtok/version.py')
with open(path, 'r') as f:
    exec(f.read())

setuptools.setup(
    name='calibtok',
    version=__version__,
    description='Calibration tokens that adapt a frozen perspective depth estimator to fisheye cameras.',  # noqa: pycodestyle
    license='mit',
    python_requires='>=3.6',
    install_requires=[
        'attrs>=19.2.0',
        'pyyaml',
        'numpy>=1.17'
    ],
    setup_requires=[
        'pytest-runner'
    ],
    tests_require=[
        'pytest'
    ],
    keywords=['depth', 'fisheye', 'calibration', 'transformer', 'tokens'],
    classifiers=[
        'Natural Language :: English',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.6',
        'Programming Language :: Python :: 3.7'
    ],
    include_package_data=True,
    packages=setuptools.find_packages('src'),
    package_dir={'': 'src'},
    package_data={
        '': ['*.yml']
    },
    entry_points = {
        'console_scripts': [ 'calibtok = calibtok.cli:main' ]
    },
    test_suite = 'tests'
)
