"""
Test Suite

This package contains all tests for the toolkit:
- SMILES grammar, validity and normalization tests
- Tensor and gradient tests
- Data pipeline tests
- Model, training and checkpoint tests
- Evaluation and CLI tests
"""

# Test configuration
TEST_CONFIG = {
    # Known drugs and textbook molecules used as prototypes and vocabulary seeds
    "reference_smiles": [
        "CN=C=O",
        "c1ccccc1",
        "Nc1ccc(C(=O)O)c(O)c1",
        "Nc1ccc(O)c(C(=O)O)c1",
        "NC(=O)c1cnccn1",
        "NNC(=O)c1ccncc1",
        "CNCCCC1c2ccccc2C=Cc2ccccc21",
        "CNCCCN1c2ccccc2CCc2ccccc21",
        "NNCCc1ccccc1",
        "CC(C)NCC(O)c1ccc(O)c(O)c1",
        "CC(C)NCC(O)c1cc(O)cc(O)c1",
        "CN(C)CCC(c1ccccc1)c1ccccn1",
        "CN(C)CCN(Cc1ccccc1)c1ccccn1",
    ],
    "pyrazinamide": "NC(=O)c1cnccn1",
    "isoniazid": "NNC(=O)c1ccncc1",
    # Ten small molecules for overfitting runs; no sulfur anywhere
    "training_smiles": [
        "CCO",
        "CCN",
        "c1ccccc1",
        "CC(=O)O",
        "NC(=O)c1cnccn1",
        "NNC(=O)c1ccncc1",
        "NNCCc1ccccc1",
        "CN=C=O",
        "Nc1ccc(O)cc1",
        "CC(C)O",
    ],
    # Model sizes
    "tiny_model": {
        "max_len": 30,
        "embed_dim": 8,
        "filter_widths": [2, 3],
        "filters_per_width": 4,
        "latent_dim": 6,
        "lstm_units": 8,
        "batch_size": 4,
        "max_epochs": 2,
        "seed": 0,
    },
    "micro_model": {
        "max_len": 8,
        "embed_dim": 3,
        "filter_widths": [2, 3],
        "filters_per_width": 2,
        "latent_dim": 3,
        "lstm_units": 4,
        "batch_size": 2,
        "seed": 0,
    },
    "overfit_model": {
        "max_len": 30,
        "embed_dim": 32,
        "filter_widths": [3, 4, 5, 6],
        "filters_per_width": 16,
        "latent_dim": 64,
        "lstm_units": 64,
        "batch_size": 10,
        "initial_learning_rate": 0.005,
        "lr_decay_rate": 1.0,
        "kl_start_weight": 0.0,
        "kl_ramp_steps": 100000,
        "early_stop_patience": 2000,
        "max_epochs": 2000,
        "max_steps": 2000,
        "seed": 0,
    },
    # Desk-scale corpus: every scaffold with every ordered substituent pair
    "desk_scaffolds": [
        "c1cc({a})ccc1{b}",
        "c1ccc({a})cc1{b}",
        "c1cccc({a})c1{b}",
        "n1cc({a})ccc1{b}",
        "C1CC({a})CCN1{b}",
        "C1CC({a})CCC1{b}",
    ],
    "desk_substituents": [
        "C", "CC", "CCC", "C(C)C", "O", "OC", "OCC", "N", "NC", "N(C)C", "F", "Cl",
        "Br", "C#N", "C(=O)O", "C(=O)N", "C(=O)OC", "CO", "CN", "C(F)(F)F", "NC(=O)C",
        "S(=O)(=O)N", "CCO", "OC(F)(F)F",
    ],
    # Structural classes for latent distance checks: scaffold, varied substituents
    "desk_classes": {
        "toluenes": ("c1cc({a})ccc1C", ["C", "CC", "O", "N", "F", "CO"]),
        "piperidines": ("C1CC({a})CCN1C", ["C", "CC", "O", "N", "F", "CO"]),
        "cyclohexanols": ("C1CC({a})CCC1O", ["C", "CC", "O", "N", "F", "CO"]),
        "chloropyridines": ("n1cc({a})ccc1Cl", ["C", "CC", "O", "N", "F", "CO"]),
    },
    "desk_model": {
        "max_len": 50,
        "embed_dim": 32,
        "filter_widths": [3, 4, 5, 6],
        "filters_per_width": 16,
        "latent_dim": 64,
        "lstm_units": 64,
        "batch_size": 64,
        "initial_learning_rate": 0.003,
        "lr_decay_rate": 0.97,
        "early_stop_patience": 5,
        "max_epochs": 40,
        "seed": 0,
    },
    "desk_prototypes": 50,
    "desk_samples": 200,
    "grad_tolerance": 1e-3,
    "float32_eps": 1e-3,
    "grad_seeds": list(range(10)),
}

# Test categories
TEST_CATEGORIES = {
    "unit_tests": [
        "SMILES tests",
        "Tensor op tests",
        "Pipeline tests",
        "Metric tests"
    ],
    "integration_tests": [
        "End-to-end gradient check",
        "Training and checkpoint round trip",
        "CLI commands"
    ],
    "slow_tests": [
        "Overfit smoke run",
        "Desk-scale diversity trends"
    ]
}

# Test utilities
__all__ = [
    "TEST_CONFIG",
    "TEST_CATEGORIES"
]
