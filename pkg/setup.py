from setuptools import setup, find_packages

setup(
    name="magik",
    version="0.1.0",
    description="Zero-shot policy transfer by imagining target observations as source observations with a class-swapping VAE",
    author="MAGIK contributors",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.9",
    install_requires=[
        "torch>=2.0.0",
        "numpy>=1.24",
        "pandas>=2.0",
        "pydantic>=2.0.0",
        "pyyaml>=6.0",
        "python-dotenv>=1.0.0",
        "loguru>=0.7.0",
        "pillow>=10.0.0",
        "matplotlib>=3.7",
        "tqdm>=4.65",
    ],
    extras_require={
        "test": ["pytest>=7.0"],
    },
    entry_points={
        "console_scripts": [
            "magik=api.cli.main:main",
        ],
    },
)
