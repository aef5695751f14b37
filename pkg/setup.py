from setuptools import setup

setup(
    name="sttc-af",
    version="0.1.0",
)
