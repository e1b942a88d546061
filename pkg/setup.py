from setuptools import setup, find_packages

setup(
    name="piezobeam",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.10.0",
        "python-dotenv>=1.0.0",
    ],
    entry_points={
        "console_scripts": [
            "piezobeam=piezobeam.cli:main",
        ],
    },
    description="Spectral analysis, Fourier filtering and energy decay of semi-discretized magnetizable piezoelectric beams",
    keywords="piezoelectric, boundary feedback, finite elements, finite differences, spectral filtering",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.9",
)
