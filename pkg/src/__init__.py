"""
单目视频鱼体长度测量
"""
