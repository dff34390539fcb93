from setuptools import setup, find_packages

setup( 
    name='rtpr',
    version='0.1.0',
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    package_data={'rtpr': ['config_files/*.yaml']},
    description='Robust process regression for batches of curves with independent extended t-process errors.',
    author='Dylan Bowald',
    author_email='dylanbowald@gmail.com',
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.20',
        'scipy>=1.7',
        'pandas>=1.5',
        'pyyaml>=5.1',
        'numdifftools>=0.9.41',
    ],
    extras_require={'test': ['pytest>=7']},
    entry_points={'console_scripts': ['rtpr=rtpr.main:main']},
    )
