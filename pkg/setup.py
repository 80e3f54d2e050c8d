from setuptools import setup, find_namespace_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [line for line in fh.read().splitlines() if line and not line.startswith("#")]

# Include package data
package_data = {
    "plumeSwarm": [
        "config/*",
    ]
}

setup(
    name="plume-swarm",
    version="1.0.0",
    author="Plume Swarm Developers",
    description="Drone swarm plume search simulator: self-healing LoCUS swarms against independent MoBS drones",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_namespace_packages(include=["plumeSwarm", "plumeSwarm.*"]),
    include_package_data=True,
    package_data=package_data,
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering",
    ],
    python_requires=">=3.8",
    install_requires=requirements,
    extras_require={
        "test": ["pytest>=7.0", "hypothesis>=6.0"],
    },
    entry_points={
        "console_scripts": [
            "plume-swarm=plumeSwarm.cli:main",
        ],
    },
)
