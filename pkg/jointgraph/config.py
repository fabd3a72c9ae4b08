# global configuration
tolerance = 1e-4          # stopping rule on the max-abs change of S and V
max_iter = 1000
denom_guard = 1e-12       # added to every multiplicative-update denominator
monotone_slack = 1e-9     # relative slack used when checking objective descent

symnmf_eta = 0.5
kmeans_max_iter = 300

hyperparameter_grid = [0.01, 0.1, 1, 10, 100, 1000]
trials = 20
significance_level = 0.05

methods = ["joint", "symnmf", "kmeans"]
metric_names = ["acc", "nmi", "pur", "ari"]
report_digits = 6

weightings = ["binary", "rbf"]
normalizations = ["symmetric", "none"]
