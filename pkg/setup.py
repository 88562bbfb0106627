from setuptools import setup

setup(
    name='cslfisher',
    packages=['cslfisher', 'cslfisher.models']
)
