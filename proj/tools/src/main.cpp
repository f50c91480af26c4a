#include <iostream>

#include "spgrpo_app/app.hpp"

int main(int argc, char** argv) { return spgrpo::app::main_entry(argc, argv, std::cerr); }
