"""Multi-modal (radar / camera / IMU) deep odometry at desk scale."""

__version__ = "0.1.0"
