# Tests package for qsim
