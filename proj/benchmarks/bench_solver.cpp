int solver_placeholder;
