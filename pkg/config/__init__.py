# Empty file to make config a package
