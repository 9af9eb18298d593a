#pragma once

#include "semadv/attack_result.hpp"
#include "semadv/cadv/attack.hpp"
#include "semadv/captioning/attack.hpp"
#include "semadv/core/autodiff.hpp"
#include "semadv/core/ops.hpp"
#include "semadv/core/optim.hpp"
#include "semadv/defenses/bim.hpp"
#include "semadv/defenses/evaluate.hpp"
#include "semadv/defenses/transforms.hpp"
#include "semadv/evalcli/defend.hpp"
#include "semadv/evalcli/experiment.hpp"
#include "semadv/evalcli/report.hpp"
#include "semadv/evalcli/synthetic.hpp"
#include "semadv/evalcli/transfer.hpp"
#include "semadv/evalcli/zoo.hpp"
#include "semadv/imaging/image.hpp"
#include "semadv/imaging/io.hpp"
#include "semadv/imaging/lab_op.hpp"
#include "semadv/models/registry.hpp"
#include "semadv/tadv/attack.hpp"
#include "semadv/tadv/source.hpp"
