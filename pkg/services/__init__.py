# Empty file to make services a package
