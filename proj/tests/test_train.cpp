#include <doctest.h>
#include "sumformer/train.hpp"
