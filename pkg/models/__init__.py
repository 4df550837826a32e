# Empty file to make models a package
