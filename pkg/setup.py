import setuptools

setuptools.setup(
    name="pfc",
    version="0.1.0",
    description="Passivity-based practical formation control toolkit",
    packages=["pfc", "pfc.app"],
    package_data={"pfc.app": ["scenarios/*.json"]},
    install_requires=[
        "pandas>=1.2.4",
        "numpy>=1.20.0",
        "scipy>=1.6.0",
        "tqdm",
        "humanfriendly",
        "joblib",
        "toolz"
    ],
    extras_require={
        "tests": ["pytest"],
    },
    entry_points={
        "console_scripts": ["pfc=pfc.app.app:main"],
    },
    python_requires=">=3.8",
    classifiers=[
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9"
    ],
)
