from .ista import (LassoProblem, PowerIterationError, default_rho, improve_round, ista_solve,
                   lasso_objective, matched_filter_detect, max_eigen_gram, soft_threshold)
from .lista import (ListaParams, TrainConfig, TrainingDiverged, lista_forward, lista_gradient,
                    lista_init, lista_loss, lista_train)
