#include "plantrec/app.hpp"

int main(int argc, char** argv) { return plantrec::run_cli(argc, argv); }
