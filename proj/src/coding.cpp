namespace pdvmrnn {}
