from setuptools import setup

setup(
    name='domainrank',
    version='0.1a1',
    packages=['domainrank', 'domainrank.resources'],
    url='',
    license='',
    author='',
    author_email='',
    description='Distance-aware ranking of candidate compounds: corrects activity predictions for selection bias in '
                'the training data and for extrapolation away from it.',
    python_requires='>=3.8',
    install_requires=['numpy>=1.20', 'scipy>=1.7', 'pandas>=1.5', 'matplotlib>=3.3', 'joblib>=1.0'],
    extras_require={'test': ['pytest>=7']},
    entry_points={'console_scripts': ['domainrank = domainrank.cli:main']}
)
