from setuptools import setup, find_packages

setup(
	name='ionshuttle',
	version='0.1.0',
	packages=find_packages(exclude=['tests', 'tests.*']),
	include_package_data=True,
	python_requires='>=3.10',
	install_requires=[
		'click>=8.1.0',
		'numpy>=1.24.0',
		'torch>=2.2.0',
		'opencv-python>=4.8.0',
	],
	extras_require={
		'test': ['pytest>=7.0.0', 'networkx>=3.0'],
	},
	entry_points={
		'console_scripts': [
			'ionshuttle=ionshuttle.cli:cli',
		],
	},
	license='MIT',
)
