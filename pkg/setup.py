from setuptools import setup, find_packages
from ransomflow import __version__

long_description = """
ransomflow traces ransom payments through the Bitcoin ledger. Starting from a few
seed addresses per ransomware family it expands campaigns with the multi-input
clustering heuristic, follows money flows to collection and cash-out addresses,
attributes exits to tagged services and converts payments to USD at daily rates.
A synthetic testbed with planted campaigns is included for end-to-end evaluation.
"""

packages = find_packages()

with open("requirements.txt") as f:
    requirements = [line.strip() for line in f if line.strip()]

setup(name = 'ransomflow',
      version = __version__,
      description = 'Ransomware payment flow analysis',
      long_description=long_description,
      long_description_content_type="text/plain",
      packages = packages,
      install_requires = requirements,
      package_data={
        # If any package contains *.ini include them:
        '': ["*.ini"]},
      entry_points = {
        "console_scripts" : ["ransomflow = ransomflow.cli:main"]},
      classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ]
      )
