# Copyright 2024 The risk-map authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from codecs import open
from setuptools import setup


VERSION = open("VERSION", "r", encoding="utf-8").read().strip()
LONG_DESCRIPTION = open("README.md", "r", encoding="utf-8").read()

setup(
    name="risk-map",
    version=VERSION,
    description="Layered security scoring, cross-layer cascade ranking and Monte Carlo bands for robotic platforms.",
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    author="The risk-map authors",
    license="Apache Software License",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Developers",
        "Intended Audience :: Science/Research",
        "Topic :: Security",
        "Framework :: Flask",
        "License :: OSI Approved :: Apache Software License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Operating System :: POSIX",
        "Operating System :: MacOS",
        "Operating System :: Unix",
        "Operating System :: Microsoft :: Windows",
    ],
    keywords="security risk assessment robotics threat model cascade monte-carlo",
    packages=["risk_map"],
    include_package_data=True,
    package_data={
        "risk_map": ["data/*.json", "data/assessments/*.json", "schemas/*.json"],
    },
    python_requires=">=3.8",
    install_requires=["Flask>=2.2", "click>=8.0", "Permissive-Dict", "numpy>=1.22", "jsonschema>=4.0", "rich>=12.0"],
    entry_points={"console_scripts": ["risk-map=risk_map.cli:main"]},
)
