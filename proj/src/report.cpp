#include "blowup/model.hpp"
