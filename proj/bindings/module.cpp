// placeholder until bindings land
