"""Published reference figures for the physical instrument this package twins.

The field study behind the original device reported classification
results that the software twin cannot reproduce (they came from real
liquids and real films); they are kept here verbatim as regression
anchors for the arithmetic around them.

Note the beverage figures: the reported LOOCV accuracy is 95.3%, while
the corresponding confusion matrix works out to 20/21 = 95.24%, which
rounds to 95.2%. The two numbers may come from different evaluation
passes; both are encoded as published, deliberately left unreconciled.
"""

from __future__ import annotations

import numpy as np

from .forest import ConfusionMatrix

# Reported headline accuracies (fractions of 1).
REPORTED_BEVERAGE_LOOCV_ACCURACY = 0.953
REPORTED_WATER_ACCURACY = 0.617
REPORTED_HUMAN_PANEL_ACCURACY = 0.306

# Confusion matrix for the three-beverage study; rows = predicted,
# columns = true, entries = observation counts.
BEVERAGE_CONFUSION = ConfusionMatrix(
    classes=("A", "B", "C"),
    counts=np.array(
        [
            [7, 1, 0],
            [0, 7, 0],
            [0, 0, 6],
        ],
        dtype=np.int64,
    ),
)

# Confusion matrix for the four-mineral-water study, same orientation.
WATER_CONFUSION = ConfusionMatrix(
    classes=("I", "II", "III", "IV"),
    counts=np.array(
        [
            [16, 2, 3, 1],
            [7, 7, 4, 6],
            [1, 6, 15, 2],
            [0, 3, 1, 20],
        ],
        dtype=np.int64,
    ),
)

# Labeled ion content (ppm) of the four waters; these are the
# sample_composition values in the bundled mineral_waters pack.
WATER_COMPOSITIONS_PPM = {
    "I": {"Na+": 4.0, "K+": 2.5, "Cl-": 16.0},
    "II": {"Na+": 7.3, "K+": 4.9, "Cl-": 3.7},
    "III": {"Na+": 6.5, "K+": 1.0, "Cl-": 6.8},
    "IV": {"Na+": 6.0, "K+": 2.5, "Cl-": 20.0},
}
