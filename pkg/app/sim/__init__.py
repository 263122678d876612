"""
飞行仿真模块
刚体转动动力学、IMU 模型、专家控制器、设定值脚本与回合记录
"""
