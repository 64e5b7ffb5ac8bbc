#pragma once

#include "babel/applicator.hpp"
#include "babel/backend.hpp"
#include "babel/corpus.hpp"
#include "babel/detector.hpp"
#include "babel/diffusion.hpp"
#include "babel/error.hpp"
#include "babel/evaluation.hpp"
#include "babel/ngram.hpp"
#include "babel/profile.hpp"
#include "babel/reference_backend.hpp"
#include "babel/remote_backend.hpp"
#include "babel/repair.hpp"
#include "babel/rng.hpp"
#include "babel/synthetic.hpp"
#include "babel/text.hpp"
#include "babel/translation.hpp"
